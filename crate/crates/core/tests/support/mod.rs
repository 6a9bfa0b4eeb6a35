pub mod unet_reference;
