"""Adapter scripts that emit the filmvoices file contracts.

These wrap external models (speaker-embedding extractors, ASR) behind the
pipeline's embedding-line and transcript-document formats.  They are
deliberately standalone: the main package never imports them, and they
never import the main package - the file formats are the interface.
"""

__version__ = "0.1.0"
