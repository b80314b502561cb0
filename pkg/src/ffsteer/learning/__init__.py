"""From-scratch networks and training for the learned feedforward controllers."""
