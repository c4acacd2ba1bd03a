"""Experiment harness: configuration, Monte Carlo runners and result output."""
