"""Simulation and autonomy stack for a passive-wheeled hybrid ground/aerial quadrotor.

The package is organized around the vehicle's two mobility modes (rolling on
passive wheels vs. flying) and the planning/control pipeline that switches
between them:

- ``geometry``       reference frames, angle arithmetic, state embeddings
- ``dynamics``       rigid-body simulation, motor allocation, power model
- ``scene``          world geometry (walls, boxes) and ray casting
- ``sensors``        simulated LIDAR, clearance sensors, noisy pose
- ``control``        hybrid rolling/flying controller and transitions
- ``flatness``       differential-flatness mappings and boundary polynomials
- ``local_planner``  motion-primitive local planner
- ``mapping``        occupancy grid, incremental EDT, collision index
- ``global_planner`` hybrid A* over a ground/aerial lattice
- ``scenario``       scenario files and the built-in test course
- ``mission``        closed-loop mission executive and telemetry
- ``reporting``      energy reports, step-response metrics, figures
"""

__version__ = "0.1.0"
