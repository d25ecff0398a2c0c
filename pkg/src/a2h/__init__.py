"""A2H: humans as discoverable, addressable nodes in agent systems.

Layers, bottom-up:

  model      protocol vocabulary and canonical wire codecs
  registry   card store with capability discovery and durable journal
  engine     escalation triggers and the continue/halt/ask decision
  broker     interaction lifecycle, sync blocking, async checkpoint/resume
  adapters   per-channel rendering and reply normalization
  service    HTTP/JSON surface plus the live inbox stream
  cli        operator tool
  sim        scripted end-to-end case study
"""

from .model import *  # noqa: F401,F403 -- the protocol vocabulary is the public surface

__version__ = "0.1.0"
