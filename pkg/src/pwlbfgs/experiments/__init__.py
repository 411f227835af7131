"""Experiment harness: seeded runs, ensembles, verification suites and the CLI."""
