"""Asynchronous semantics and soundness checking for concurrent separation logic."""
