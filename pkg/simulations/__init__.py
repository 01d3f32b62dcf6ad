# simulations app
