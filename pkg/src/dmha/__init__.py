"""DMHA - Double multi-head attention multimodal speech emotion recognition"""

__version__ = "1.0.1"
__author__ = "DMHA Team"
__license__ = "GPL-3.0"

# Fixed class order used by every label, report and threshold vector
EMOTIONS = (
    'anger',
    'happiness',
    'sadness',
    'fear',
    'surprise',
    'contempt',
    'disgust',
    'neutral',
)

NUM_CLASSES = len(EMOTIONS)
