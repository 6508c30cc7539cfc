"""Power and QoE analytics for video streaming session logs."""

__version__ = "0.1.0"
