"""Frequency-domain FWI, source-focusing WRI and WRI with a stochastic
low-rank sketch of the source covariance."""

__version__ = "0.1.0"
