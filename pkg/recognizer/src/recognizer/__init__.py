"""Neural expression proposer for rectangle scenes.

Trains a small transformer decoder on dream records exported by the host
system and serves candidate expressions over a line-delimited JSON
protocol.
"""

__version__ = "0.1.0"
