"""Deterministic laboratory for the additive-manufacturing toolchain.

Pipeline: STL mesh (ASCII/binary) -> planar slicing -> minimal G-code ->
integrity envelope -> simulated lossy channel -> printer firmware model.
Plus STPA-style hazard enumeration over a declarative control structure and
seeded fault-injection campaigns measuring where each corruption is caught.
"""

__version__ = "0.1.0"
