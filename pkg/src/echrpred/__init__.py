"""Judicial-outcome prediction pipeline for ECHR judgment documents."""

__version__ = "0.1.0"
