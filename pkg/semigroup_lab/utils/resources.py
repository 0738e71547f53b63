"""
Process resource metering for evolutions and scenario runs.

Wall-clock, CPU time and resident memory are read through psutil; the figures
only feed the text summary, never the CSV outputs, which must stay
reproducible byte for byte.
"""

import os
import time
from dataclasses import dataclass

import psutil


@dataclass
class ResourceUsage:
    wall_seconds: float = 0.0
    cpu_seconds: float = 0.0
    rss_mb: float = 0.0

    def __add__(self, other: 'ResourceUsage') -> 'ResourceUsage':
        return ResourceUsage(self.wall_seconds + other.wall_seconds,
                             self.cpu_seconds + other.cpu_seconds,
                             max(self.rss_mb, other.rss_mb))

    def describe(self) -> str:
        return f'{self.wall_seconds:.3f} s wall, {self.cpu_seconds:.3f} s CPU, {self.rss_mb:.1f} MB RSS'


class ResourceMeter:
    """
    Context manager measuring the enclosed block.

    Usage:
        with ResourceMeter() as meter:
            ...
        meter.usage.wall_seconds
    """

    def __init__(self):
        self.process = psutil.Process(os.getpid())
        self.usage = ResourceUsage()
        self._start_wall = 0.0
        self._start_cpu = 0.0

    @staticmethod
    def _cpu(times) -> float:
        return times.user + times.system

    def __enter__(self) -> 'ResourceMeter':
        self._start_wall = time.perf_counter()
        self._start_cpu = self._cpu(self.process.cpu_times())
        return self

    def __exit__(self, exc_type, exc, tb):
        self.usage = ResourceUsage(
            wall_seconds=time.perf_counter() - self._start_wall,
            cpu_seconds=self._cpu(self.process.cpu_times()) - self._start_cpu,
            rss_mb=self.process.memory_info().rss / (1024 * 1024),
        )
        return False
