"""
Shared pytest configuration.

Two hypothesis profiles are registered: "fast" for local runs and "ci" for
the full example counts.  Select one with HYPOTHESIS_PROFILE.
"""
import os

from hypothesis import settings

settings.register_profile("fast", max_examples=25, deadline=None)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))
