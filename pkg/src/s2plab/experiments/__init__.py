"""Config-driven experiment runners, manifests, and the CLI."""
