"""Headless synthesis of IDE code-QA fine-tuning data.

Stages: behavior analysis of chat logs, production planning, configuration
generation, simulated editor sessions, pool answering and rule-checked judging.
"""

from __future__ import annotations

__version__ = "0.1.0"
