"""Declarative deployment and management of EVM blockchain applications."""

__version__ = "0.1.0"
