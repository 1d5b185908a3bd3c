"""Cycle-level simulator of a data-local task-parallel tile grid.

The package splits along the natural hardware boundaries: datasets and
placement (:mod:`tilesim.graphdata`), the task/channel program model
(:mod:`tilesim.program`), the on-chip network (:mod:`tilesim.noc`), the
per-tile scheduler (:mod:`tilesim.tile`), the cycle engine
(:mod:`tilesim.engine`), kernel programs and their reference oracles
(:mod:`tilesim.kernels`, :mod:`tilesim.oracles`), the energy and area model
(:mod:`tilesim.energy`), and the experiment CLI (:mod:`tilesim.cli`).
"""

__version__ = "0.1.0"
