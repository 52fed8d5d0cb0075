"""filmvoices: film audio to per-character speech dossiers.

Three-stage batch pipeline over file contracts: speaker diarization
(clustering + DER scoring), transcript-to-speaker alignment with
main-speaker selection, and chat-completion-based character analysis.
"""

__version__ = "0.1.0"
