"""Cleaning of spike/step/drift anomalies in bottom-pressure time series
via an iteratively refined variational autoencoder."""

__version__ = "0.1.0"
