"""Peer-review market model: analytics, simulation and parameter learning."""
