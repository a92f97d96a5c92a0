"""SLO-aware admission control policies and a discrete-event simulator to study them."""
__version__ = "0.1.0"
