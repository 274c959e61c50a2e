"""actimon: accelerometer stream analytics and monitoring.

Turns tri-axial accelerometer (plus audio-feature) streams into activity
levels, activity-class labels, risky-event alarms, and implicit user-identity
decisions, with a multi-device ingest/monitoring service and CLI on top.
"""

__version__ = "0.1.0"
