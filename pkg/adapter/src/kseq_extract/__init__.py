"""Video-to-keypoints extraction adapter.

Converts video files into .kseq keypoint sequence files (one JSON header
line plus one JSON array per frame) using a holistic pose-estimation
backend, so the training engine can consume real footage.
"""

__version__ = "0.1.0"
