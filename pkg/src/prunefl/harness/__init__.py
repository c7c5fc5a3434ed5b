"""Configuration, data ingestion, channel sampling, sweeps and the CLI."""
