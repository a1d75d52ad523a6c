from vodcache.exceptions import *
from vodcache.catalog import *
from vodcache.workload import *
from vodcache.cache import *
from vodcache.policies import *
from vodcache.metrics import *
from vodcache.config import *
from vodcache.simulation import *
from vodcache.plotting import *
