# management package
