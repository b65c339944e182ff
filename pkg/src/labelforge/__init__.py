"""Label apps from time-series antivirus scan reports.

Modules: ``report_model`` and ``store`` hold snapshots and histories,
``metrics`` scores labels and scanners, ``strategies`` and
``threshold_search`` cover vote thresholds, ``features`` and ``forest`` build
learned labelers, and ``vt_client``/``report_service`` move reports over HTTP.
"""

__version__ = "0.1.0"
