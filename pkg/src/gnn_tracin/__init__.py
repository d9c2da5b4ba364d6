"""GCN event classification with TracIn self-influence data filtering."""

__version__ = "0.1.0"
