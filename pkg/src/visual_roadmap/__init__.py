"""Visual Roadmap: sampling-based motion planning on robot images."""
