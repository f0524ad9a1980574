"""Answer-chunk extraction and ranking for reading comprehension.

Passages are scanned for variable-length candidate chunks, each candidate
is scored against the question by a pair of recurrent encoders with
word-by-word attention, and the ranker is trained end-to-end to put the
gold answer first. Subpackages cover the numeric substrate, data model,
candidate generation, encoders, the scoring model, training, and
evaluation, plus a CLI tying them together.
"""

__version__ = "0.1.0"
