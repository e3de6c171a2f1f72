"""Deep-RL trading laboratory: data, indicators, environment, agents, backtests."""

__version__ = "0.1.0"
