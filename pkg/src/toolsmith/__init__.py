"""Toolsmith: a task-solving agent pipeline that analyzes a task, decides
what tools it needs, retrieves them from a registry or writes them itself
(generate → execute → repair, behind a human approval gate), and then
solves the task by calling those tools."""

__version__ = "0.1.0"

__all__ = ["__version__"]
