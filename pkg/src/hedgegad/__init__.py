"""Homophily analytics, CSBM-C generation, heterophily attacks and the HedGe model."""

__version__ = "0.1.0"
SCHEMA_VERSION = "1"
