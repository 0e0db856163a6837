"""smf: mine project history and bug trackers, build released versions, run
external metric executables, and aggregate the results for analysis."""

__version__ = "0.1.0"
