"""Utility modules."""

from slicebench.utils.config import Config, get_config
from slicebench.utils.logging import setup_logging
from slicebench.utils.seeding import derive_seed, make_rng

__all__ = ["Config", "get_config", "setup_logging", "derive_seed", "make_rng"]
