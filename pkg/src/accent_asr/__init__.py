"""Accent-adaptation speech recognition pipeline built from scratch.

Corpus preparation, MFCC frontend, a six-layer CTC acoustic model,
character n-gram decoding and WER/CER reporting.
"""

__version__ = "0.1.0"
