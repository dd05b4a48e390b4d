"""Roundabout insertion simulator with asynchronous actor-critic training."""

__version__ = "0.1.0"
