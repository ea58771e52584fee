"""Three-stream hybrid GRU/LSTM hand-gesture classifier, written against plain numpy."""

__version__ = "0.1.0"

CLASS_NAMES = (
    "Left",
    "Right",
    "Up",
    "Down",
    "Hi",
    "Bye",
    "Open",
    "Close",
    "Thumbs up",
    "Thumbs down",
)
