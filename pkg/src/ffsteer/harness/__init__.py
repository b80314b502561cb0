"""Experiment orchestration: data collection, open- and closed-loop evaluation."""
