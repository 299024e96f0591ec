"""Energy-based reinforcement learning with exact classical and quantum-simulation oracles."""

__version__ = "0.1.0"
