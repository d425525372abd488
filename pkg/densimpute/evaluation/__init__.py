"""
Evaluation: scores, rank aggregation, the benchmark runner and its report files.
"""
