"""
RingWave

A deterministic ring-road traffic simulator for studying stop-and-go waves
and their dampening by a single controlled vehicle.
"""

__version__ = "0.1.0"
__description__ = "Ring-road traffic microsimulator with wave-dampening vehicle control"
