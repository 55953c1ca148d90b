"""Low-bitrate sensor/image wire protocol, node simulator, edge gateway and
sensor-conditioned image generation pipeline."""

__version__ = "0.1.0"
