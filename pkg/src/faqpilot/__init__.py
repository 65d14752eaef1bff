"""Real-time FAQ suggestion copilot for contact-center agents.

Library + CLI covering the full loop: mine FAQs from historical call
transcripts, serve live match/generate suggestions under a latency budget,
resolve answers from the FAQ store or a RAG backend, and replay recorded
conversations to measure suggestion quality and RAG-call savings.
"""

__version__ = "0.1.0"
