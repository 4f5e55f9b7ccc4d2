"""Shared utilities: MNIST loading, results store, run configuration and errors"""
