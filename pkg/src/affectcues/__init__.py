"""Continuous affect prediction from head and eye tracker cues.

Pipeline stages live in their own modules: ``ingest`` (tracker and
annotation CSVs), ``lld`` (derived descriptors), ``functionals`` and
``wavelet`` (windowed features), ``selection`` (mutual-information filter),
``alignment`` (annotation delay and standardization), ``model`` (BLSTM
regressor), ``metrics`` (CCC, SSE, Pearson) and ``pipeline``/``cli`` for
whole experiments.
"""

__version__ = "0.1.0"
