"""End-to-end toolkit for GitHub issue triage.

Harvests issue reports, builds a multi-label corpus over {bug, enhancement,
question}, fine-tunes a bidirectional transformer encoder against a keyword
baseline, and serves the trained model as a webhook auto-labeler.
"""

__version__ = "0.1.0"
