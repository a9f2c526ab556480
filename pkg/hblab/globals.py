global loglevel
global quiet
global threads
loglevel = "INFO"
quiet = False
# None means "use HBL_THREADS or the number of CPUs"
threads = None
