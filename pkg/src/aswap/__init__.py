"""Simulation of coupler-assisted swap (aSWAP) control of a tunable coupler."""

__version__ = "0.1.0"
