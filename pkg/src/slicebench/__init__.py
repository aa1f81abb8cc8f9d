"""SliceBench - cell-free massive-MIMO network slicing testbed with D-TD3 agents."""

__version__ = "0.1.0"
__author__ = "SliceBench Developers"
__license__ = "MIT"
