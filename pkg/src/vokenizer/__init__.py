"""Token-image alignment toolkit.

Pipeline: tokenize corpora with span provenance, train a contextual
token-image matcher on caption/image features, retrieve one voken
(image id) per token by exact maximum-inner-product search, transfer
voken annotations between tokenizers, and compute corpus diagnostics
and retrieval baselines.
"""

__version__ = "0.1.0"
