"""Minimal Green-energy point configurations on compact rank one symmetric
spaces, with the separation bounds they satisfy, and discrete harmonic balls
on triangulated closed surfaces."""

__version__ = "0.1.0"
