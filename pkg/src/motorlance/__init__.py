"""Community motorlance dispatch: routing, registry, dispatch lifecycle,
fleet simulation, feasibility analytics, and an HTTP/WebSocket gateway."""

__version__ = "0.1.0"
