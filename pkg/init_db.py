#!/usr/bin/env python3
"""
Results Store Initialization Script for the Approximate Multiplier Toolkit

This script initializes the SQLite results store and optionally seeds it with
the published reference metrics.

Usage:
    python init_db.py [--db-path DB_PATH] [--reference-data]
"""

import os
import sys
import argparse
import logging

from dotenv import load_dotenv

from data.reference_values import REFERENCE_8X8_METRICS
from utils.database import ResultStore


def init_database(db_path: str, add_reference_data: bool = False) -> ResultStore:
    """
    Initialize the results store and optionally add the published metrics

    Args:
        db_path: Path to the SQLite database file
        add_reference_data: Whether to import the published 8x8 metric rows

    Returns:
        The initialized store
    """
    logger = logging.getLogger("init_db")
    logger.info(f"Initializing results store at {db_path}")

    store = ResultStore(db_path)

    if add_reference_data:
        logger.info("Importing published reference metrics...")
        store.import_reference_metrics(REFERENCE_8X8_METRICS)

    logger.info(f"Results store initialization complete at {db_path}")
    return store


def main():
    """Main entry point for the script"""
    load_dotenv()
    logging.basicConfig(level=logging.INFO,
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    default_path = os.getenv("APPROXMUL_DB", "approxmul_results.db")
    parser = argparse.ArgumentParser(description="Initialize the approximate multiplier results store")
    parser.add_argument("--db-path", type=str, default=default_path,
                        help=f"Path to the SQLite database file (default: {default_path})")
    parser.add_argument("--reference-data", action="store_true",
                        help="Add the published reference metrics to the store")

    args = parser.parse_args()

    init_database(args.db_path, args.reference_data)

    return 0


if __name__ == "__main__":
    sys.exit(main())
