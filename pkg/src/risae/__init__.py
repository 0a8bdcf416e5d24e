"""Joint training of a neural transmitter, receiver and RIS beam selector."""

from .autoencoder import (BeamPolicy, EndToEndModel, ModelShape, Scenario, TrainConfig, evaluate_ser,
                          load_model, save_model, train)
from .channel import Channel, Geometry
from .numerics import RngStream

__all__ = ["BeamPolicy", "Channel", "EndToEndModel", "Geometry", "ModelShape", "RngStream", "Scenario",
           "TrainConfig", "evaluate_ser", "load_model", "save_model", "train"]
