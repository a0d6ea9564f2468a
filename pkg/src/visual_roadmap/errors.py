class VisualRoadmapError(Exception):
    """Base class for errors raised by this package."""


class DimensionMismatchError(VisualRoadmapError, ValueError):
    pass


class GeometryMismatchError(VisualRoadmapError, ValueError):
    """Two rasters (or view lists) do not share the same geometry."""


class DegenerateCameraError(VisualRoadmapError, ValueError):
    pass


class UnsupportedMetricError(VisualRoadmapError, ValueError):
    pass


class InsufficientNodesError(VisualRoadmapError, ValueError):
    pass


class InCollisionError(VisualRoadmapError):
    """A start or goal image overlaps the obstacle image."""


class IsolatedQueryError(VisualRoadmapError):
    """No planner-certified edge connects a query image to the roadmap."""


class EmptyPointSetError(VisualRoadmapError, ValueError):
    pass


class DegenerateChartError(VisualRoadmapError):
    pass
