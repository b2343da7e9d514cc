"""
TYolo - temporal object detection on a from-scratch numpy tensor core.

Static and QRNN/ConvLSTM temporal detectors, temporal data augmentation,
NMS + mAP evaluation and a batch-1 FPS benchmark.
"""

__version__ = "0.3.0"
