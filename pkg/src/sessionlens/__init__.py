"""Search-session analytics and knowledge state/gain prediction."""
