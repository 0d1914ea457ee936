"""Shared geometries for the test suite."""

import math

from logcap.geometry import AnnulusBand, Arc, CompactSetSpec, Disk, LogPolarPoint, RadialSegment


def corpus() -> list[CompactSetSpec]:
    """Ten sets: circles, arcs, radial segments, unions and two area pieces."""
    return [
        CompactSetSpec((Arc(1.0, 0.0, 2 * math.pi),), "circle t=1"),
        CompactSetSpec((Arc(2.0, 0.0, 2 * math.pi),), "circle t=2"),
        CompactSetSpec((Arc(2.0, 0.0, math.pi),), "half arc t=2"),
        CompactSetSpec((Arc(1.5, 1.0, 2.0),), "short arc t=1.5"),
        CompactSetSpec((RadialSegment(1.0, 3.0, 0.0),), "segment [1,3]"),
        CompactSetSpec((RadialSegment(2.0, 2.5, 1.0),), "segment [2,2.5]"),
        CompactSetSpec((Arc(1.0, 0.0, 1.0), Arc(3.0, 3.0, 4.0)), "two arcs"),
        CompactSetSpec((RadialSegment(1.0, 2.0, 0.0), Arc(3.0, 0.0, 2 * math.pi)),
                       "segment and circle"),
        CompactSetSpec((AnnulusBand(1.0, 2.0, 0.0, 1.0),), "band"),
        CompactSetSpec((Disk(LogPolarPoint(2.0, 1.0), 0.5),), "disk"),
    ]
