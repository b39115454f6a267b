"""Max-min secrecy-rate optimization for IRS-aided multi-user downlinks
operating at finite blocklength.

Layout:
    channel     geometry, path loss, Rician fading, bounded CSI errors
    metrics     exact rates, channel dispersion, secrecy reports, fairness
    surrogate   concave minorants used by the alternating optimization
    conic       dense interior-point solver for LP/SOCP/SDP cones
    robust      worst-case LMI machinery for imperfect CSI
    algorithms  alternating-optimization drivers (perfect and robust CSI)
    harness     experiment runner, CSV emission, plotting, CLI backend
"""

__version__ = "0.1.0"
