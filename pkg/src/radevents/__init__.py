"""Event-based clinical findings toolkit for radiology reports.

Subpackages cover standoff annotation IO, task encodings (sequence tagging
and relation classification), a trainable baseline extractor, token-level
event scoring, agreement measurement, and cross-validation statistics.
"""

__version__ = "0.1.0"
