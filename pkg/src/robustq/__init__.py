"""Exact state-vector simulation of robust quantum algorithms for biased oracles."""
