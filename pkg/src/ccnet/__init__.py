"""Color-coded traffic congestion classification.

Vehicle detections become red/white occupancy masks, which a small
convolutional network classifies as congested or non-congested.
"""

__version__ = "0.1.0"
