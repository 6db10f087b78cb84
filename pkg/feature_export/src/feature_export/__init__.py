"""Feature export adapter for the token-image alignment pipeline.

Runs frozen encoders over text corpora and image manifests and writes
the pipeline's binary feature-file inputs. The pipeline is consumed
only through its documented file formats; nothing here imports it.
"""

__version__ = "0.1.0"
