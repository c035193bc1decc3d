"""Numerical services: LP forms, simplex, tangents, intervals, reachability, benchmarks"""
