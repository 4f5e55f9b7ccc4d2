import sqlite3
import json
import logging
from typing import Any, Dict, List, Optional
from datetime import datetime

import pandas as pd


class ResultStore:
    """SQLite store for error reports, DNN evaluation results and published reference metrics"""

    def __init__(self, db_path: str = "approxmul_results.db"):
        """
        Initialize the results store

        Args:
            db_path: Path to the SQLite database file
        """
        self.db_path = db_path
        self.logger = logging.getLogger("ResultStore")

        # Create tables if they don't exist
        self._initialize_database()

    def _get_connection(self) -> sqlite3.Connection:
        """Get a connection to the SQLite database"""
        return sqlite3.connect(self.db_path)

    def _initialize_database(self) -> None:
        """Create the necessary tables if they don't exist"""
        conn = self._get_connection()
        try:
            cursor = conn.cursor()

            cursor.execute('''
            CREATE TABLE IF NOT EXISTS error_reports (
                report_id INTEGER PRIMARY KEY AUTOINCREMENT,
                model_name TEXT,
                n INTEGER,
                er REAL,
                med REAL,
                nmed REAL,
                mred REAL,
                max_ed INTEGER,
                mismatch_count INTEGER,
                report TEXT,
                timestamp TEXT
            )
            ''')

            cursor.execute('''
            CREATE TABLE IF NOT EXISTS eval_results (
                eval_id INTEGER PRIMARY KEY AUTOINCREMENT,
                multiplier TEXT,
                top1_accuracy REAL,
                dal REAL,
                per_class TEXT,
                n_images INTEGER,
                checkpoint TEXT,
                timestamp TEXT
            )
            ''')

            cursor.execute('''
            CREATE TABLE IF NOT EXISTS reference_metrics (
                design TEXT PRIMARY KEY,
                er REAL,
                med REAL,
                nmed REAL,
                mred REAL
            )
            ''')

            conn.commit()
            self.logger.info("Result store tables initialized successfully")

        except sqlite3.Error as e:
            self.logger.error(f"Result store initialization error: {e}")
            raise
        finally:
            conn.close()

    def store_error_report(self, report: Dict[str, Any]) -> None:
        """
        Store one error report

        Args:
            report: ErrorReport fields as a dict
        """
        conn = self._get_connection()
        try:
            cursor = conn.cursor()
            cursor.execute(
                "INSERT INTO error_reports (model_name, n, er, med, nmed, mred, max_ed, mismatch_count, report, timestamp) "
                "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)",
                (
                    report["model_name"],
                    report["n"],
                    report["er"],
                    report["med"],
                    report["nmed"],
                    report["mred"],
                    report["max_ed"],
                    report["mismatch_count"],
                    json.dumps(report),
                    datetime.now().isoformat()
                )
            )
            conn.commit()
            self.logger.info(f"Stored error report for {report['model_name']}")

        except sqlite3.Error as e:
            self.logger.error(f"Error storing error report: {e}")
            raise
        finally:
            conn.close()

    def store_eval_result(self, result: Dict[str, Any], checkpoint: Optional[str] = None) -> None:
        """
        Store one DNN evaluation result

        Args:
            result: EvalResult fields as a dict
            checkpoint: Checkpoint path the result was measured on
        """
        conn = self._get_connection()
        try:
            cursor = conn.cursor()
            cursor.execute(
                "INSERT INTO eval_results (multiplier, top1_accuracy, dal, per_class, n_images, checkpoint, timestamp) "
                "VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    result["multiplier"],
                    result["top1_accuracy"],
                    result["dal"],
                    json.dumps(result["per_class_accuracy"]),
                    result["n_images"],
                    checkpoint,
                    datetime.now().isoformat()
                )
            )
            conn.commit()
            self.logger.info(f"Stored evaluation result for {result['multiplier']}")

        except sqlite3.Error as e:
            self.logger.error(f"Error storing evaluation result: {e}")
            raise
        finally:
            conn.close()

    def import_reference_metrics(self, metrics: Dict[str, Dict[str, Optional[float]]]) -> None:
        """
        Import published metric rows, replacing earlier imports

        Args:
            metrics: Design name to {er, med, nmed, mred}
        """
        conn = self._get_connection()
        try:
            cursor = conn.cursor()
            for design, values in metrics.items():
                cursor.execute(
                    "INSERT OR REPLACE INTO reference_metrics (design, er, med, nmed, mred) VALUES (?, ?, ?, ?, ?)",
                    (design, values.get("er"), values.get("med"), values.get("nmed"), values.get("mred"))
                )
            conn.commit()
            self.logger.info(f"Imported {len(metrics)} reference metric rows")

        except sqlite3.Error as e:
            self.logger.error(f"Error importing reference metrics: {e}")
            raise
        finally:
            conn.close()

    def _fetch(self, query: str) -> pd.DataFrame:
        conn = self._get_connection()
        try:
            return pd.read_sql_query(query, conn)
        except (sqlite3.Error, pd.errors.DatabaseError) as e:
            self.logger.error(f"Error querying result store: {e}")
            raise
        finally:
            conn.close()

    def fetch_error_reports(self) -> pd.DataFrame:
        return self._fetch(
            "SELECT model_name, n, er, med, nmed, mred, max_ed, mismatch_count, timestamp "
            "FROM error_reports ORDER BY report_id"
        )

    def fetch_eval_results(self) -> pd.DataFrame:
        return self._fetch(
            "SELECT multiplier, top1_accuracy, dal, per_class, n_images, checkpoint, timestamp "
            "FROM eval_results ORDER BY eval_id"
        )

    def fetch_reference_metrics(self) -> pd.DataFrame:
        return self._fetch("SELECT design, er, med, nmed, mred FROM reference_metrics ORDER BY design")

    def list_models(self) -> List[str]:
        """Distinct model names with at least one stored error report"""
        return sorted(set(self.fetch_error_reports()["model_name"]))
