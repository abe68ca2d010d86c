"""Benchmarks for hypershell."""
