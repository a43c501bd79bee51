"""casecheck: consistency engine and evaluation harness for multi-query case files."""

__version__ = "0.1.0"
