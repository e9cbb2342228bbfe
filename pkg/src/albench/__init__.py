"""Active-learning workbench for BIO sequence labeling.

The pipeline covers corpus ingestion, skip-gram and character n-gram
vectors, k-means feature codebooks, hand-crafted feature templates, a
linear-chain CRF, pool-based active learning under five query
strategies, and annotation-effort evaluation.
"""

__version__ = "0.1.0"
