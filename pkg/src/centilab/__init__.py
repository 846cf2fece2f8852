"""Simulation and causal analysis of synchronous networks with bounded delays."""

from .network import INF, ChannelSpec, ContextClass, Network, Node

__all__ = ["INF", "ChannelSpec", "ContextClass", "Network", "Node"]
__version__ = "0.1.0"
