"""pagewatch: screenshot-based detection and defense tooling against web
behavior-manipulation pages (scareware, fake downloads, notification
stealing, support scams)."""

__version__ = "0.1.0"
