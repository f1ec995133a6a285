"""Dynamic pickup and delivery with docking-port queues, LIFO loading and a
cost-function-approximation VNS dispatcher."""
from .model import (CostBreakdown, Factory, Instance, InvalidInstanceError, Multipliers, Order,
                    TravelModel, Vehicle, split_order)
from .sdp import Action, State, VehicleStatus, run_episode, transition, validate_action
from .dispatcher import CfaVnsDispatcher, DispatcherConfig
from .instances import GeneratorSpec, generate, load_instance, save_instance

__version__ = "0.1.0"
