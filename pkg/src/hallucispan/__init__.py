"""Span-level hallucination annotation, detection and evaluation for patient summaries."""

__version__ = "0.1.0"
