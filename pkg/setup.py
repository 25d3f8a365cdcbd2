#!/usr/bin/env python3
"""Setup script for goal-synth (backward compatibility)."""

from setuptools import setup

# All configuration is in pyproject.toml
setup(name="goal-synth")
