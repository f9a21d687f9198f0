"""Unbalanced three-phase feeder power flow, voltage-unbalance metrics, and
inverter reactive-power optimization."""

__version__ = "0.1.0"
